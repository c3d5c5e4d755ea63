__int64 __fastcall fn_pack(int a1, int a2)
{
  unsigned __int8 v3[8]; // [rsp+0h]
  unsigned int v4; // [rsp+Ch]

  *(int *)v3 = a1;
  *(int *)&v3[4] = a2;
  v4 = 0;
  v4 = v4 + *(unsigned __int16 *)v3;
  v4 = v4 + *(unsigned __int16 *)&v3[2];
  v4 = v4 + *(unsigned __int16 *)&v3[4];
  v4 = v4 + *(unsigned __int16 *)&v3[0];
  return v4;
}
