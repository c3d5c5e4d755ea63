__int64 __fastcall fn_quote(char *a1, char *a2)
{
  char v3[4]; // [rsp+0h]
  char v4; // al
  int v5; // [rsp+8h]
  int v6; // [rsp+Ch]
  int i; // [rsp+10h]

  v3[0] = 34;
  v3[1] = 92;
  v3[2] = 10;
  v3[3] = 9;
  v5 = 0;
  v6 = 0;
  while ( a1[v5] )
  {
    v4 = a1[v5];
    for ( i = 0; i < 4; ++i )
    {
      if ( v4 == v3[i] )
      {
        a2[v6] = 92;
        v6 = v6 + 1;
        break;
      }
    }
    a2[v6] = v4;
    v6 = v6 + 1;
    v5 = v5 + 1;
  }
  a2[v6] = 0;
  return (unsigned int)v6;
}
