__int64 __fastcall fn_median(int *a1, int a2)
{
  int v5[16]; // [rsp+0h]
  int v6; // eax
  int v7; // ecx
  int i; // [rsp+44h]
  int j; // [rsp+48h]

  if ( a2 > 16 )
    a2 = 16;
  for ( i = 0; i < a2; ++i )
    v5[i] = a1[i];
  for ( i = a2; i < 16; ++i )
    v5[i] = 0;
  for ( i = 1; i < 16; ++i )
  {
    v7 = v5[i];
    for ( j = i - 1; j >= 0 && v5[j] > v7; --j )
      v5[j + 1] = v5[j];
    v5[j + 1] = v7;
  }
  v6 = *(int *)((char *)v5 + 32);
  return (unsigned int)v6;
}
